from .datasets import Dataset, batches
from .idx import IdxFormatError, fetch_mnist, load_idx, load_mnist, read_idx, write_idx
from .sequences import image_to_sequence, load_delimited_sequences, write_delimited_sequences
from .synthetic import TASKS, synthetic_tasks
