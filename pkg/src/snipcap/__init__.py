"""snipcap: desk-scale multi-sentence video captioning with knowledge-conditioned sentence loops."""

__version__ = "0.1.0"
