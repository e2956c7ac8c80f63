from .dataset import DatasetError, QARecord, load_dataset, record_from_dict, save_dataset
from .evaluate import EvalReport, evaluate
from .replay import replay
from .sampling import SubsetPlan, allocate_cells, domain_histogram, largest_remainder, stratified_subset
