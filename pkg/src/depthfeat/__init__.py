"""Self-supervised monocular depth with jointly learned dense features."""
__version__ = "0.1.0"
