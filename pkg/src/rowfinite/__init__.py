"""Row-finite ODE systems on quenched geometric graphs."""
__version__ = "0.1.0"
