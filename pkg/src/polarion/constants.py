"""Unit system: hbar = 1, energies in meV, lengths in nm, eps0 = 1."""

HBAR_C = 197327.0  # meV nm
MEV = 1.0
UEV = 1e-3  # micro-eV in meV
NM = 1.0
UM = 1e3  # micrometre in nm
