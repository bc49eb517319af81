"""Product-quantization nearest-neighbor search with residual re-ranking."""

from .adc import AdcIndex, SearchResult, adc_build, adc_search, adc_search_batch
from .evaluation import (BenchReport, GroundTruth, compute_groundtruth, exact_search,
                         recall_at_r, recall_curve, run_experiment, timed_search)
from .io import (generate_synthetic, load_index, load_model, load_quantizer, read_vectors,
                 save_index, save_model, save_quantizer, write_vectors)
from .ivf import (IvfIndex, IvfSearchParams, ivf_build, ivf_refine_encode, ivf_refine_train,
                  ivf_rerank, ivf_search, ivf_train)
from .quant import Codebook, ProductQuantizer, TrainParams, adc_distance, kmeans_train, pq_train
from .refine import reconstruct, refine_encode, refine_train, rerank, residual, search_refined

__version__ = "0.1.0"
