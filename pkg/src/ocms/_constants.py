"""Internal constants for the ocms package.

These values fix the arithmetic and experiment defaults used throughout the
package. They are not part of the public API.
"""

# Largest prime below 2^64; the default modulus of the hashing field
PRIME = 2**64 - 59

# 2^64 mod PRIME, used when folding 128-bit products back into 64 bits
PRIME_FOLD = 59

# Quality threshold of the hashing field: size >= max(d + 1, FIELD_OVERSAMPLING * m)
FIELD_OVERSAMPLING = 5

MIN_BINARY_DEGREE = 3
MAX_BINARY_DEGREE = 64

# Irreducible trinomials / pentanomials over GF(2), one per degree.
# Each entry lists the exponents strictly between 0 and the degree; the
# polynomial is x^degree + sum(x^k for k in entry) + 1.
IRREDUCIBLE_TERMS: dict[int, tuple[int, ...]] = {
    3: (1,),
    4: (1,),
    5: (2,),
    6: (1,),
    7: (1,),
    8: (4, 3, 1),
    9: (1,),
    10: (3,),
    11: (2,),
    12: (3,),
    13: (4, 3, 1),
    14: (5,),
    15: (1,),
    16: (5, 3, 1),
    17: (3,),
    18: (3,),
    19: (5, 2, 1),
    20: (3,),
    21: (2,),
    22: (1,),
    23: (5,),
    24: (4, 3, 1),
    25: (3,),
    26: (4, 3, 1),
    27: (5, 2, 1),
    28: (1,),
    29: (2,),
    30: (1,),
    31: (3,),
    32: (7, 3, 2),
    33: (10,),
    34: (7,),
    35: (2,),
    36: (9,),
    37: (6, 4, 1),
    38: (6, 5, 1),
    39: (4,),
    40: (5, 4, 3),
    41: (3,),
    42: (7,),
    43: (6, 4, 3),
    44: (5,),
    45: (4, 3, 1),
    46: (1,),
    47: (5,),
    48: (5, 3, 2),
    49: (9,),
    50: (4, 3, 2),
    51: (6, 3, 1),
    52: (3,),
    53: (6, 2, 1),
    54: (9,),
    55: (7,),
    56: (7, 4, 2),
    57: (4,),
    58: (19,),
    59: (7, 4, 2),
    60: (1,),
    61: (5, 2, 1),
    62: (29,),
    63: (1,),
    64: (4, 3, 1),
}

# Miller-Rabin witnesses that are deterministic for every n < 2^64
MILLER_RABIN_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

# Column sums of a transition matrix may deviate this much from 1
# (published matrices are rounded to three decimals)
STOCHASTIC_ATOL = 5e-3

# Relative tolerance under which two objective values count as a tie
TIE_RTOL = 1e-12

# Report record layout: u32 z, u64 a0, u64 a1
REPORT_RECORD_BYTES = 20

# Datasets
MOD_ALIGNMENT = 16
ZIPF_EXPONENT = 2.0
GAUSSIAN_SIGMA = 50.0
GAUSSIAN_MEAN_LOW = 1000
GAUSSIAN_MEAN_HIGH = 9000
GAUSSIAN_DOMAIN = 10001
KOSARAK_SUBSAMPLE_RATE = 0.01

# Experiments
DEFAULT_EPSILONS = (1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_TRIALS = 100
DEFAULT_TOP_K = 100

# Original CMS sketch width used for communication accounting
ORIGINAL_CMS_WIDTH = 1024

# Below this many e^epsilon units of dictionary the O(.) table entries are loose
SMALL_D_FACTOR = 10.0
