"""RIS-aided massive MIMO uplink simulator with ZF detection"""

__version__ = "0.1.0"
