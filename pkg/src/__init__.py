# topic-signals - Source package
