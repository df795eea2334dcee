from .registry import InterfaceRegistry
from .rental import HouseRental, RentalOracle
from .testing import DepthChaincode, KVChaincode, LoopChaincode
from .tokens import ReceiverChaincode, TokenChaincode, VaultChaincode

__all__ = [
    "DepthChaincode",
    "HouseRental",
    "InterfaceRegistry",
    "KVChaincode",
    "LoopChaincode",
    "ReceiverChaincode",
    "RentalOracle",
    "TokenChaincode",
    "VaultChaincode",
]
