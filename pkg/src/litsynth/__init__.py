"""Literature-synthesis engine.

Turns a collection of research papers into four linked structured
representations: a faceted review table, per-facet evidence with source
attribution, per-facet hierarchical taxonomies, and citation-grounded
narrative syntheses. The core is deterministic and offline-testable via
record/replay transcripts of every model exchange.
"""

__version__ = "0.1.0"
