"""Attribute registry and question templates.

These must stay byte-identical to the retrieval engine's training-export
templates; the conformance tests cross-check them against the engine's
`export-train` output.
"""

ATTRIBUTE_NAMES = (
    "areaMM2",
    "minorAxisMM",
    "norm_color",
    "radial_color_std_max",
    "deltaB",
    "deltaL",
    "deltaLB",
    "stdLExt",
    "clin_size_long_diam_mm",
    "perimeterMM",
    "norm_border",
    "area_perim_ratio",
    "A",
    "Aext",
    "B",
    "Bext",
)

QUESTION_TEMPLATES = {
    "areaMM2": "What is the area of the lesion in mm^2?",
    "minorAxisMM": "What is the smallest diameter of the lesion in mm?",
    "norm_color": "What is the color variation of the lesion?",
    "radial_color_std_max": "What is the color asymmetry within the lesion?",
    "deltaB": "What is the average B (LAB) contrast between the inside and outside of the lesion?",
    "deltaL": "What is the average L (LAB) contrast between the inside and outside of the lesion?",
    "deltaLB": "What is the L (LAB) contrast between the lesion and its immediate surrounding skin?",
    "stdLExt": "What is the standard deviation of L (LAB) outside the lesion?",
    "clin_size_long_diam_mm": "What is the maximum diameter of the lesion in mm?",
    "norm_border": "What is the border irregularity of the lesion?",
    "perimeterMM": "What is the perimeter of the lesion in mm?",
    "area_perim_ratio": "What is the ratio between the perimeter and area of the lesion?",
    "A": "What is the A (LAB) value inside the lesion?",
    "Aext": "What is the A (LAB) value outside the lesion?",
    "B": "What is the B (LAB) value inside the lesion?",
    "Bext": "What is the B (LAB) value outside the lesion?",
}


def attribute_index(name: str) -> int:
    try:
        return ATTRIBUTE_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown attribute name: {name!r}") from None
