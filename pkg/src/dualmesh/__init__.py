"""Two-tier BLE/LoRa mesh: protocol engine, closed-form models and simulator."""

__version__ = "0.1.0"
