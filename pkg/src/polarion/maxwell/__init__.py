"""Classical light-matter eigenmodes of 1D layered structures."""
from .fdfd import fd_helmholtz_qnm
from .media import (
    HopfieldParams,
    Layer,
    LayerStack,
    LorentzMedium,
    Pml,
    bulk_polariton_dispersion,
    dispersion_residual,
    effective_permittivity,
    hopfield_eigen,
)
from .modes import (
    QnmMode,
    first_order_correlation,
    inner_product,
    integrate,
    load_profile,
    mode_energy,
    normalize_mode,
    polariton_projection,
    save_profile,
)
from .roots import Region, check_root, find_qnms, find_roots
from .transfer import characteristic_function, characteristic_matrices, field_profile, transfer_matrix

__all__ = [
    "HopfieldParams", "Layer", "LayerStack", "LorentzMedium", "Pml", "QnmMode", "Region",
    "bulk_polariton_dispersion", "characteristic_function", "characteristic_matrices", "check_root",
    "dispersion_residual", "effective_permittivity", "fd_helmholtz_qnm", "field_profile", "find_qnms",
    "find_roots", "first_order_correlation", "hopfield_eigen", "inner_product", "integrate", "mode_energy",
    "load_profile", "normalize_mode", "polariton_projection", "save_profile", "transfer_matrix",
]
