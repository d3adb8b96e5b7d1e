import scipy.constants as sc

# speed of light in nm·THz
C_NM_THZ = sc.c * 1e-3

# reference operating line (Rb87 D2)
D2_WAVELENGTH_NM = 780.241209686
