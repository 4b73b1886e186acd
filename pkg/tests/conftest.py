"""Shared pytest configuration.

Hypothesis deadlines are disabled because several properties exercise dense
linear algebra whose first-call cost (BLAS thread spin-up) trips the default
200ms budget on slow runners.
"""

from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=30, print_blob=True)
settings.load_profile("suite")
