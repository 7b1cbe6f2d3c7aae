"""
Services layer for topic-signals.

This package contains the pipeline stages:
- IngestService: Annotation parsing and validation
- CorpusService: Vocabulary, bags of labels and tf-idf matrices
- TopicService: Online LDA, perplexity and topic-count selection
- SignalService: Regular per-camera time series
- ChangepointService: Optimal partitioning and calendar matching
- RatioService: RuLSIF and relative Pearson divergence
- DetectionService: Daily anomaly scores and threshold sweeps
- SynthService: Synthetic annotation streams with known events
- ArtifactService / ConfigService: Workdir files and merged configuration
"""
