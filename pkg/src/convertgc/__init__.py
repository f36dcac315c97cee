"""Contrastive graph clustering with reliable learnable augmentation."""
