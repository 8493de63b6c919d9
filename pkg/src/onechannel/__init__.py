"""Transfer matrices, spectral densities and band structure of one-channel unitary operators."""

__version__ = "0.1.0"

from .exceptions import *  # noqa: F401,F403
from .mat2core import (
    U11Eigensystem,
    haar_unitary,
    operator_norm,
    phi_flat,
    phi_flat_inv,
    phi_sharp,
    phi_sharp_inv,
    u11_defect,
    u11_eigensystem,
    unitary_defect,
)
from .model import (
    OneChannelModel,
    Shell,
    ZipperSpec,
    all_swap_model,
    build_generalized_qw,
    build_qw1d,
    build_stroboscopic,
    build_zipper,
    random_model,
    theta_block,
    validate_A1,
    validate_A2,
)
from .transfer import (
    TransferProduct,
    channel_block,
    exceptional_angles,
    solution_samples,
    t_flat,
    t_sharp,
    transfer_matrix,
    transfer_product,
    transfer_products,
)
from .finite import (
    FiniteOperator,
    assemble,
    averaged_green,
    boundary_resolvent,
    green,
    spectral_measure,
)
from .spectrum import DensityGrid, carmona_density, density_at, density_mass, ls_integral, poisson_transform
from .periodic import (
    BandSet,
    PeriodicZipper,
    band_set,
    diagonalize_monodromy,
    discriminant,
    monodromy,
    point_spectrum,
    theta_zipper,
)
from .ensemble import EnsembleConfig, fourth_moment_curve, perturbed_density, sample_model
from .config import load_config, parse_config
