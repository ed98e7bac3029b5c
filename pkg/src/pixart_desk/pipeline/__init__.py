from .autolabel import (DEFAULT_PROMPT, AutoLabelRequest, AutoLabelResponse, AutoLabelResult,
                        InProcessTransport, RetryPolicy, TcpTransport, autolabel)
from .config import build_model_config, build_stages, load_config
from .ledger import RunLedger, read_ledger
from .mockserver import MockLabelService, MockServer
from .optim import AdamW
from .sampling import CFG_SWEEP, VariantError, sample_to_dir
from .stages import (ABLATION_LABEL, STAGE_NAMES, PlanError, PlanResult, StageConfig, StageResult,
                     run_plan, run_stage, validate_plan)
from .synthetic import make_two_mode_dataset
from .text import HashingTextEmbedder, load_embedding_file, tokenize
