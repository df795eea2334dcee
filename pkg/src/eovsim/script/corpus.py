"""Builtin contracts: the usual spending patterns, ready to parse."""

from __future__ import annotations

from .parser import Contract, parse_and_typecheck

CORPUS: dict[str, str] = {
    "LockWithPublicKey": """
contract LockWithPublicKey(publicKey: PublicKey, val: Value) {
  clause spend(sig: Signature) {
    verify checkSig(publicKey, sig)
    unlock val
  }
}
""",
    "RevealPreimage": """
contract RevealPreimage(hash: Sha256(Bytes), val: Value) {
  clause reveal(string: Bytes) {
    verify sha256(string) == hash
    unlock val
  }
}
""",
    "RevealFixedPoint": """
contract RevealFixedPoint(val: Value) {
  clause reveal(hash: Bytes) {
    verify bytes(sha256(hash)) == hash
    unlock val
  }
}
""",
    "LockUntil": """
contract LockUntil(publicKey: PublicKey, time: Time, val: Value) {
  clause spend(sig: Signature) {
    verify checkSig(publicKey, sig)
    verify after(time)
    unlock val
  }
}
""",
    "LockDelay": """
contract LockDelay(publicKey: PublicKey, delay: Duration, val: Value) {
  clause spend(sig: Signature) {
    verify checkSig(publicKey, sig)
    verify older(delay)
    unlock val
  }
}
""",
    "TransferWithTimeout": """
contract TransferWithTimeout(sender: PublicKey, recipient: PublicKey, timeout: Time, val: Value) {
  clause transfer(senderSig: Signature, recipientSig: Signature) {
    verify checkSig(sender, senderSig)
    verify checkSig(recipient, recipientSig)
    unlock val
  }
  clause timeout(senderSig: Signature) {
    verify checkSig(sender, senderSig)
    verify after(timeout)
    unlock val
  }
}
""",
    "EscrowWithDelay": """
contract EscrowWithDelay(sender: PublicKey, recipient: PublicKey, escrow: PublicKey, delay: Duration, val: Value) {
  clause transfer(sig1: Signature, sig2: Signature) {
    verify checkMultiSig([sender, recipient, escrow], [sig1, sig2])
    unlock val
  }
  clause timeout(sig: Signature) {
    verify checkSig(sender, sig)
    verify older(delay)
    unlock val
  }
}
""",
    "VaultSpend": """
contract VaultSpend(hot: PublicKey, cold: PublicKey, delay: Duration, val: Value) {
  clause cancel(sig: Signature) {
    verify checkSig(cold, sig)
    unlock val
  }
  clause complete(sig: Signature) {
    verify older(delay)
    verify checkSig(hot, sig)
    unlock val
  }
}
""",
    "HashTimeLock": """
contract HashTimeLock(sender: PublicKey, recipient: PublicKey, hash: Ripemd160(Sha256(Bytes)), expiry: Time, val: Value) {
  clause claim(preimage: Bytes, sig: Signature) {
    verify ripemd160(sha256(preimage)) == hash
    verify checkSig(recipient, sig)
    unlock val
  }
  clause refund(sig: Signature) {
    verify after(expiry)
    verify checkSig(sender, sig)
    unlock val
  }
}
""",
    "MultiSigTimelock": """
contract MultiSigTimelock(k1: PublicKey, k2: PublicKey, k3: PublicKey, backup: PublicKey, unlockAt: Time, val: Value) {
  clause cosign(s1: Signature, s2: Signature) {
    verify checkMultiSig([k1, k2, k3], [s1, s2])
    unlock val
  }
  clause recover(sig: Signature) {
    verify after(unlockAt)
    verify checkSig(backup, sig)
    unlock val
  }
}
""",
    "SizedSecret": """
contract SizedSecret(digest: Sha1(Bytes), length: Number, val: Value) {
  clause open(secret: Bytes, flag: Boolean) {
    verify size(secret) == length
    verify sha1(secret) == digest
    verify flag
    unlock val
  }
  clause differ(a: Bytes, b: Bytes) {
    verify a != b
    verify older(1024s)
    unlock val
  }
}
""",
}


def builtin_contract(name: str) -> Contract:
    return parse_and_typecheck(CORPUS[name])


def builtin_contracts() -> dict[str, Contract]:
    return {name: builtin_contract(name) for name in CORPUS}
