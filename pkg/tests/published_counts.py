"""Overall per-class counts of six public benchmarks and their reported imbalance ratios."""

CLASS_COUNTS = {
    "BioNLP": [35336, 10589, 8639, 4330, 1069],
    "TweetNER": [5860, 2763, 2311, 2780, 2048, 2094, 1605],
    "MIT-Restaurant": [4629, 3371, 3074, 2303, 1763, 1202, 1271, 901],
    "Irma17": [2358, 1881, 1590, 894, 755, 615, 613, 567, 126],
    "Idai19": [1869, 482, 433, 407, 354, 143, 89, 80, 57, 19],
    "SST-5": [3140, 3111, 2242, 1852, 1510],
}

REPORTED_IR = {
    "BioNLP": 33.1,
    "TweetNER": 3.7,
    "MIT-Restaurant": 5.1,
    "Irma17": 18.7,
    "Idai19": 98.4,
    "SST-5": 2.1,
}
