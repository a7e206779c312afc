"""Printed confusion matrices used as fixed oracles.

Rows are true class, columns predicted, both in CLASS_ORDER. Traces and
totals below were tallied by hand from the printed cells, independently of
the library code under test.
"""

CLASS_ORDER = ("sugarcane", "wheat", "potato", "mustard", "maize", "cotton")

SVM = (
    (7514, 259, 17, 6, 192, 21),
    (264, 17694, 27, 51, 178, 36),
    (19, 23, 2679, 213, 62, 296),
    (57, 38, 244, 5592, 34, 671),
    (204, 249, 13, 5, 3678, 1),
    (107, 192, 287, 417, 107, 8799),
)

LOGREG = (
    (7623, 274, 45, 24, 109, 27),
    (153, 19214, 34, 62, 94, 74),
    (34, 42, 2714, 134, 32, 190),
    (31, 15, 167, 5629, 46, 421),
    (105, 161, 19, 32, 3714, 9),
    (68, 108, 135, 234, 62, 8799),
)

ASEN = (
    (7573, 285, 3, 35, 384, 35),
    (324, 18293, 4, 9, 341, 13),
    (11, 24, 2754, 187, 3, 291),
    (18, 14, 240, 5612, 13, 324),
    (264, 123, 16, 7, 3612, 31),
    (23, 91, 528, 492, 13, 8845),
)

# hand tallies: (trace, total)
SVM_TALLY = (45956, 50246)
LOGREG_TALLY = (47693, 50634)
ASEN_TALLY = (46689, 50835)

ASEN_ROW_SUMS = (8315, 18984, 3270, 6221, 4053, 9992)
ASEN_WHEAT_COLUMN = 18830
