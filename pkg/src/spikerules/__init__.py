"""Learning-rule workbench for recurrent spiking networks."""

__version__ = "0.1.0"
