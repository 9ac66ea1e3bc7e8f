"""Very deep hierarchical VAEs on a small reverse-mode autodiff engine."""
