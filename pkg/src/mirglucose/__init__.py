"""Blood glucose regression from mid-infrared transmittance spectra."""

__version__ = "0.1.0"
