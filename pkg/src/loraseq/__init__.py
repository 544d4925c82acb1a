"""loraseq: desk-scale LoRA fine-tuning and evaluation for sequence labeling."""

__version__ = "0.1.0"
