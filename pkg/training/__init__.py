"""Fine-tuning of the detection head on pseudo-labels"""
