"""RapidRAID pipelined erasure codes and a classical Cauchy Reed-Solomon baseline."""

__version__ = "0.1.0"
