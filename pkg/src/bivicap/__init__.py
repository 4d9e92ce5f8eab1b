"""Video captioning with a bidirectional LSTM encoder and soft-attention decoder."""

__version__ = "0.1.0"
