"""triphase: quantify, segment, synthesize and compare three-phase voxel microstructures."""

from .volume import (
    DEFAULT_SPACING_UM,
    PHASE_NAMES,
    PHASE_NI,
    PHASE_PORE,
    PHASE_YSZ,
    PHASES,
    SYMMETRY_OP_COUNT,
    GrayscaleVolume,
    SegmentedVolume,
    VolumeFormatError,
    apply_symmetry,
    compose_symmetry,
    crop,
    from_unit_range,
    import_slice_stack,
    inverse_symmetry,
    load_volume,
    sample_subvolumes,
    save_volume,
    symmetry_matrix,
    to_unit_range,
)

__version__ = "0.1.0"
