from hypothesis import settings

settings.register_profile("wcr", max_examples=50, deadline=None, derandomize=True)
settings.load_profile("wcr")
