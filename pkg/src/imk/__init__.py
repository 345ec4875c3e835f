"""Invisible-keyboard decoding stack.

Subpackages cover the full pipeline: dataset handling (`imk.data`),
behavioral statistics (`imk.analysis`), the two-stage neural decoder
(`imk.model`), its training scheme (`imk.training`), text-entry metrics
(`imk.metrics`), a synthetic-typist simulator (`imk.synthetic`) and a
session-oriented decode service (`imk.service`).
"""

__version__ = "0.1.0"
