#pragma once

#include <array>

namespace opportune {

// Built-in think-time prior: synthetic gap samples (seconds) between cell
// executions, heavy-tailed with a 23 s 75th percentile. A user-supplied
// sample file replaces these; data/think_prior.txt mirrors this array.
inline constexpr std::array<double, 400> kDefaultThinkPrior = {{
    5.5106, 3.0971, 47.5112, 3.5407, 10.6275, 3.4557, 2.0179, 4.9814,
    42.9136, 3.3342, 1.0783, 8.823, 4.7504, 4.1472, 24.24, 7.2356,
    9.7325, 28.3385, 36.3011, 3.9677, 83.1641, 54.4107, 6.4636, 7.4594,
    2.3141, 48.6917, 3.7703, 3.0827, 50.2085, 7.74, 20.5699, 1.0199,
    0.3493, 0.9257, 12.1692, 17.0955, 3.5049, 18.3713, 158.0723, 2.2789,
    8.2641, 83.0702, 4.0187, 5.6992, 74.836, 2.045, 4.2351, 11.5983,
    14.501, 10.1121, 559.6682, 2.4876, 11.8333, 12.6933, 318.3602, 125.0036,
    18.3675, 23.1522, 11.3935, 40.6632, 34.5397, 5.136, 1.5436, 9.707,
    24.5421, 16.853, 1.6949, 5.3246, 1.2479, 35.7662, 3.1478, 4.3144,
    62.0878, 23.5226, 95.228, 2.1306, 9.5855, 7.5206, 3.2382, 1.0345,
    2.1674, 10.0036, 43.5153, 4.8065, 3.5815, 5.2775, 12.0078, 36.0532,
    7.0663, 4.783, 3.514, 2.5934, 14.0802, 14.92, 186.1096, 43.742,
    7.0102, 15.3908, 1.0548, 20.3096, 1.7367, 12.3441, 10.944, 6.9665,
    12.8752, 0.3769, 41.1045, 1.2275, 98.8789, 0.2662, 26.2586, 1.7191,
    58.9081, 2.1856, 4.0206, 13.9512, 5.3047, 16.6657, 30.1888, 1.1026,
    68.7941, 17.3978, 3.6344, 9.8428, 4.259, 57.5408, 5.1476, 27.7527,
    1.3795, 4.9673, 549.1199, 68.1357, 9.4142, 6.8691, 34.4345, 3.527,
    3.0579, 1.1315, 10.1958, 4.8557, 15.0078, 5.331, 6.712, 10.9178,
    1.7191, 7.7903, 3.5872, 1.7932, 183.1898, 13.2141, 10.6499, 40.0492,
    3.7856, 61.6828, 164.0523, 5.4742, 3.5556, 10.0067, 2.1985, 0.9033,
    0.6929, 20.3192, 1.2171, 1.2489, 2.3833, 1.6056, 2.2096, 7.0575,
    76.1357, 2.0199, 14.611, 5.3984, 20.9642, 7.8313, 15.9859, 2.0152,
    15.159, 13.6058, 4.1199, 6.6557, 21.9823, 20.9766, 9.2689, 23.7242,
    3.874, 12.3763, 1.4501, 122.9187, 4.0232, 4.0778, 22.0111, 38.8529,
    11.4343, 8.9932, 7.1675, 62.3617, 7.5306, 2.9487, 188.0972, 6.6556,
    50.0781, 4.5385, 91.0005, 6.7081, 15.0942, 44.6173, 34.448, 1.2865,
    1.9083, 0.7361, 14.964, 26.3219, 0.3972, 3.2458, 35.3031, 45.7425,
    83.2201, 16.9232, 2.1148, 8.8236, 1.2432, 5.2139, 18.0859, 18.2766,
    22.7814, 3.5878, 0.6399, 20.4087, 4.8318, 1.3995, 2.3178, 61.1408,
    22.1632, 8.9585, 0.7978, 0.2679, 3.4204, 2.677, 2.0713, 17.9387,
    5.1706, 1.8497, 4.3983, 40.1142, 16.893, 1.9742, 1.3149, 107.9946,
    23, 14.0888, 15.0428, 7.8051, 33.3867, 12.7836, 1.6466, 15.5378,
    10.5473, 7.195, 1.5056, 30.9959, 61.7446, 2.1654, 53.5049, 7.3858,
    23.8211, 22.1217, 0.3311, 2.3375, 34.6489, 2.4413, 16.6585, 0.7212,
    28.4563, 12.0812, 59.6924, 12.9823, 1.1537, 26.8082, 23.3701, 4.9037,
    9.5639, 5.2822, 3.5513, 2.6388, 38.6004, 9.7228, 6.7751, 0.9986,
    28.8116, 5.6688, 30.3229, 1.5073, 2.0423, 0.0675, 22.4157, 3.7848,
    9.654, 3.9684, 2.4858, 0.9465, 23.7478, 24.5349, 13.9024, 124.9151,
    7.7202, 7.9018, 30.4907, 76.5699, 22.5901, 56.2439, 8.8735, 1.9918,
    0.3613, 37.4789, 45.5875, 336.1262, 347.6498, 35.8756, 0.9665, 5.3548,
    3.8023, 4.4189, 1.1414, 1.7842, 7.3909, 43.3409, 3.3139, 8.4382,
    25.1459, 2.3979, 5.5319, 17.8337, 9.1912, 1.0451, 1.9284, 2.9671,
    6.4176, 10.6361, 21.9609, 9.7412, 21.2211, 29.5809, 33.4591, 58.0311,
    12.3516, 4.5281, 5.8301, 21.1067, 184.5862, 51.119, 18.3426, 0.3609,
    20.151, 4.776, 6.3774, 8.3126, 14.3728, 0.3012, 1.3392, 1.9985,
    29.9033, 36.9519, 11.3877, 0.1608, 11.374, 12.4108, 19.3554, 4.7235,
    4.3496, 5.9268, 19.772, 8.9724, 57.2771, 7.5729, 34.5254, 0.6123,
    0.6507, 76.7161, 2.1693, 0.469, 1.8464, 16.6586, 3.8965, 37.1974,
    15.3541, 25.0534, 36.2199, 11.5332, 4.6134, 27.819, 5.5805, 0.2081,
    5.522, 3.5259, 11.5336, 14.1588, 43.1485, 12.9539, 12.575, 19.5885,
}};

}  // namespace opportune
