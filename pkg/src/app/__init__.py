# Semantic topic signals and notable-event detection
