"""Classifiers, checkpoints, the training loop and hyperparameter search"""
