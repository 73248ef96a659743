"""Generate the golden SMILES corpus used by the parser tests.

Expected atom/bond counts come from published molecular formulas and ring
counts, not from this package's parser: for a connected molecule the heavy
(non-hydrogen) atom count follows from the formula, and the heavy-atom bond
count is atoms - 1 + rings.  Each entry below records the formula and ring
count it was derived from so the numbers can be re-checked against any
chemistry reference (or a cheminformatics toolkit, where available).

Run from the repository root:

    python3 tools/make_smiles_golden.py > tests/data/smiles_golden.tsv
"""

# (name, smiles, molecular formula, heavy atoms, rings)
CORPUS = [
    ("ethanol", "CCO", "C2H6O", 3, 0),
    ("ethylene", "C=C", "C2H4", 2, 0),
    ("acetylene", "C#C", "C2H2", 2, 0),
    ("acetic acid", "CC(=O)O", "C2H4O2", 4, 0),
    ("acetone", "CC(=O)C", "C3H6O", 4, 0),
    ("isobutane", "CC(C)C", "C4H10", 4, 0),
    ("isopentane", "CCC(C)C", "C5H12", 5, 0),
    ("urea", "NC(=O)N", "CH4N2O", 4, 0),
    ("glycine", "NCC(=O)O", "C2H5NO2", 5, 0),
    ("nitromethane", "C[N+](=O)[O-]", "CH3NO2", 4, 0),
    ("bromoethane", "CCBr", "C2H5Br", 3, 0),
    ("cyclopropane", "C1CC1", "C3H6", 3, 1),
    ("cyclohexane", "C1CCCCC1", "C6H12", 6, 1),
    ("benzene", "c1ccccc1", "C6H6", 6, 1),
    ("toluene", "Cc1ccccc1", "C7H8", 7, 1),
    ("phenol", "Oc1ccccc1", "C6H6O", 7, 1),
    ("chlorobenzene", "Clc1ccccc1", "C6H5Cl", 7, 1),
    ("pyridine", "c1ccncc1", "C5H5N", 6, 1),
    ("thiophene", "c1ccsc1", "C4H4S", 5, 1),
    ("imidazole", "c1cnc[nH]1", "C3H4N2", 5, 1),
    ("naphthalene", "c1ccc2ccccc2c1", "C10H8", 10, 2),
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O", "C9H8O4", 13, 1),
    ("caffeine", "CN1C=NC2=C1C(=O)N(C)C(=O)N2C", "C8H10N4O2", 14, 2),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "C13H18O2", 15, 1),
]

HEAVY = {"C", "H", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B"}


def heavy_atoms_from_formula(formula):
    """Count non-hydrogen atoms in a Hill-style molecular formula."""
    import re

    total = 0
    for sym, count in re.findall(r"([A-Z][a-z]?)(\d*)", formula):
        if not sym:
            continue
        if sym != "H":
            total += int(count) if count else 1
    return total


def main():
    for name, smiles, formula, atoms, rings in CORPUS:
        derived = heavy_atoms_from_formula(formula)
        if derived != atoms:
            raise SystemExit(
                f"{name}: formula {formula} gives {derived} heavy atoms, "
                f"entry says {atoms}"
            )
        bonds = atoms - 1 + rings
        print(f"{smiles}\t{atoms}\t{bonds}")


if __name__ == "__main__":
    main()
