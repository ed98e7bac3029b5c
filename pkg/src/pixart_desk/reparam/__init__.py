from .checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    CheckpointChecksumError,
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    from_bytes,
    load,
    save,
    to_bytes,
)
from .surgery import (
    SurgeryError,
    SurgeryReport,
    final_modulation_residual,
    modulation_residual,
    reparameterize,
    source_modulations,
)

__all__ = [
    "FORMAT_VERSION", "Checkpoint", "CheckpointChecksumError", "CheckpointError",
    "CheckpointShapeError", "CheckpointTruncatedError", "CheckpointVersionError",
    "from_bytes", "load", "save", "to_bytes", "SurgeryError", "SurgeryReport",
    "final_modulation_residual", "modulation_residual", "reparameterize", "source_modulations",
]
