"""LoRaWAN deployment toolkit: airtime planning, multi-gateway uplink
simulation and field-log reliability metrics."""

__version__ = "0.1.0"
