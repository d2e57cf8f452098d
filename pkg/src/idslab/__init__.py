"""GAN-augmented deep reinforcement learning intrusion detection on NSL-KDD."""

__all__ = [
    "agent",
    "baselines",
    "cli",
    "dataset",
    "env",
    "gan",
    "metrics",
    "nn",
    "synth_eval",
]
