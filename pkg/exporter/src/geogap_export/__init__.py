"""geogap-export: run a sentence encoder offline and write geogap's file formats.

The consumer package never loads neural models; this exporter is the only
place they run. Its outputs are plain files — the binary embedding cache
and the topic-distribution JSONL — and those formats are the whole
contract between the two packages.
"""

__version__ = "0.1.0"

from .cachefile import read_cache, write_cache
from .clustering import spherical_kmeans, topic_rows
from .encoders import HashEncoder, resolve_encoder
from .records import read_records
