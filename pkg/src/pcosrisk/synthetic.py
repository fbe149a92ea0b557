"""Seeded synthetic stand-in for the Kerala PCOS clinical table.

The licensed source data cannot be redistributed with this package, so
demos and the acceptance suite run on a generated twin: same column
names, same size (541 rows, 40 features), binary 0/1 flags, and a signal
structure dominated by follicle counts, weight gain, and cycle
irregularity.

Records carry a latent biological status; features are drawn conditional
on it, and the recorded label then picks up diagnostic noise with the
subgroup structure the audit is expected to surface: under-25 cases are
both milder (attenuated signals) and under-recorded, adolescent controls
show multi-follicular noise, obese controls stay clean (and obese cases
are never under-recorded), lean cases keep strong ovarian signals.
Point a run at a real export of the source table whenever one exists.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

DEFAULT_SEED = 20240
DEFAULT_ROWS = 541


def make_synthetic_pcos(
    seed: int = DEFAULT_SEED,
    n: int = DEFAULT_ROWS,
    prevalence: float = 0.33,
    young_attenuation: float = 0.45,
    young_miss_rate: float = 0.22,
    case_miss_rate: float = 0.03,
    control_overcall_rate: float = 0.025,
    n_missing_rows: int = 8,
) -> pd.DataFrame:
    """Generate the full table, header and coding per the default manifest.

    young_attenuation scales down the case/control separation for
    under-25 cases; the three rate knobs control label noise (missed
    young cases, missed other cases, over-called controls). A few rows
    receive one empty cell each so ingestion has something to clean.
    """
    rng = np.random.default_rng(seed)
    n_pos = int(round(prevalence * n))
    latent = np.zeros(n, dtype=bool)
    latent[rng.choice(n, size=n_pos, replace=False)] = True

    # demographics
    age_band = rng.choice(3, size=n, p=[0.12, 0.60, 0.28])
    age = np.where(
        age_band == 0,
        rng.integers(18, 25, size=n),
        np.where(
            age_band == 1, rng.integers(25, 36, size=n), rng.integers(36, 49, size=n)
        ),
    ).astype(float)
    young = age < 25

    height = np.clip(rng.normal(157.0, 6.0, n), 140, 180)
    bmi_band = np.empty(n, dtype=np.int64)
    bmi_band[~latent] = rng.choice(3, size=int((~latent).sum()), p=[0.60, 0.28, 0.12])
    bmi_band[latent] = rng.choice(3, size=int(latent.sum()), p=[0.46, 0.33, 0.21])
    bmi = np.clip(
        np.where(
            bmi_band == 0,
            rng.normal(22.3, 1.9, n),
            np.where(bmi_band == 1, rng.normal(27.1, 1.5, n), rng.normal(32.6, 2.2, n)),
        ),
        16,
        45,
    )
    obese = bmi >= 30
    lean = bmi < 25
    weight = bmi * (height / 100.0) ** 2

    # per-record signal strength; under-25 cases are milder
    strength = np.where(latent, np.where(young, 1.0 - young_attenuation, 1.0), 0.0)
    noisy_ctrl = (~latent) & young & (rng.random(n) < 0.45)
    clean_ctrl = (~latent) & obese

    foll_mean = (
        6.5
        + 7.6 * strength
        + np.where(noisy_ctrl, 4.0, 0.0)
        - np.where(clean_ctrl, 1.0, 0.0)
    )
    foll_l = np.clip(np.round(rng.normal(foll_mean, 2.8)), 0, 35)
    foll_r = np.clip(np.round(rng.normal(foll_mean, 2.8)), 0, 35)

    def signal_flag(p_pos, p_neg, p_noisy=None, p_clean=None, lean_pos=None):
        base = p_neg + (p_pos - p_neg) * strength
        if p_noisy is not None:
            base = np.where(noisy_ctrl, p_noisy, base)
        if p_clean is not None:
            base = np.where(clean_ctrl, p_clean, base)
        if lean_pos is not None:
            base = np.where(latent & lean & ~young, lean_pos, base)
        return (rng.random(n) < base).astype(float)

    weight_gain = signal_flag(0.72, 0.13, p_noisy=0.30, p_clean=0.10, lean_pos=0.62)
    cycle_irregular = signal_flag(0.70, 0.14, p_noisy=0.36, p_clean=0.08, lean_pos=0.72)
    hair_growth = signal_flag(0.40, 0.10, p_noisy=0.18, p_clean=0.05)
    skin_darkening = signal_flag(0.45, 0.12, p_noisy=0.20, p_clean=0.06)
    hair_loss = signal_flag(0.42, 0.24)
    pimples = signal_flag(0.55, 0.33, p_noisy=0.48)
    fast_food = signal_flag(0.60, 0.34)
    exercise = (rng.random(n) < np.where(latent, 0.18, 0.27)).astype(float)
    pregnant = (rng.random(n) < np.where(latent, 0.10, 0.15)).astype(float)

    # hormones and ultrasound (kept weaker than the headline features)
    amh = np.exp(rng.normal(np.log(2.7) + (np.log(3.6) - np.log(2.7)) * strength, 0.60))
    fsh = np.clip(rng.normal(5.6, 1.4, n), 1.0, 15.0)
    lh = np.clip(rng.normal(5.2 + 1.6 * strength, 2.2), 0.5, 25.0)
    cycle_length = np.clip(
        np.round(rng.normal(29.0, 2.6, n) + cycle_irregular * rng.normal(9.0, 4.5, n)),
        21,
        90,
    )
    avg_f_l = np.clip(rng.normal(4.3 + 0.3 * strength, 1.0), 1.0, 12.0)
    avg_f_r = np.clip(rng.normal(4.3 + 0.3 * strength, 1.0), 1.0, 12.0)
    endometrium = np.clip(rng.normal(8.4, 1.7, n), 3.0, 16.0)

    # anthropometrics and vitals correlated with BMI but not the label
    waist = np.clip(26.0 + 0.55 * (bmi - 23.0) + rng.normal(0, 1.4, n), 20, 55)
    hip = np.clip(waist + 6.0 + rng.normal(0, 1.2, n), 24, 65)

    marriage_years = np.clip((age - 21.0) * 0.6 + rng.normal(0, 2.0, n), 0, 30)
    abortions = rng.poisson(0.3, n).astype(float)

    # recorded label: latent status plus diagnostic noise. Missed cases are
    # concentrated in the young; obese cases are never missed, keeping the
    # obese subgroup free of feature-positive recorded-negatives.
    u = rng.random(n)
    y = latent.astype(int).copy()
    miss = latent & ~obese & (
        np.where(young, u < young_miss_rate, u < case_miss_rate)
    )
    y[miss] = 0
    overcall = (~latent) & (rng.random(n) < control_overcall_rate)
    y[overcall] = 1

    frame = pd.DataFrame(
        {
            "Sl. No": np.arange(1, n + 1),
            "Patient File No.": np.arange(10001, 10001 + n),
            "PCOS (Y/N)": y,
            "Age (yrs)": age,
            "Weight (Kg)": np.round(weight, 1),
            "Height(Cm)": np.round(height, 1),
            "BMI": np.round(bmi, 2),
            "Blood Group": rng.integers(11, 19, size=n),  # undeclared; ingestion drops it
            "Pulse rate(bpm)": np.round(rng.normal(74, 5, n), 0),
            "RR (breaths/min)": np.round(rng.normal(18, 1.6, n), 0),
            "Hb(g/dl)": np.round(rng.normal(11.6, 0.9, n), 1),
            "Cycle(R/I)": cycle_irregular.astype(int),
            "Cycle length(days)": cycle_length,
            "Marraige Status (Yrs)": np.round(marriage_years, 1),
            "Pregnant(Y/N)": pregnant.astype(int),
            "No. of aborptions": abortions,
            "I beta-HCG(mIU/mL)": np.round(np.exp(rng.normal(4.0, 1.1, n)), 1),
            "II beta-HCG(mIU/mL)": np.round(np.exp(rng.normal(3.8, 1.1, n)), 1),
            "FSH(mIU/mL)": np.round(fsh, 2),
            "LH(mIU/mL)": np.round(lh, 2),
            "FSH/LH": np.round(fsh / lh, 3),
            "Hip(inch)": np.round(hip, 1),
            "Waist(inch)": np.round(waist, 1),
            "Waist:Hip Ratio": np.round(waist / hip, 3),
            "TSH (mIU/L)": np.round(np.clip(rng.normal(2.6, 1.2, n), 0.2, 12), 2),
            "AMH(ng/mL)": np.round(amh, 2),
            "PRL(ng/mL)": np.round(np.clip(rng.normal(17, 6, n), 2, 60), 2),
            "Vit D3 (ng/mL)": np.round(np.clip(rng.normal(28, 9, n), 4, 80), 1),
            "PRG(ng/mL)": np.round(np.clip(rng.normal(3.2, 1.5, n), 0.2, 12), 2),
            "RBS(mg/dl)": np.round(np.clip(rng.normal(98, 12, n), 60, 220), 0),
            "Weight gain(Y/N)": weight_gain.astype(int),
            "hair growth(Y/N)": hair_growth.astype(int),
            "Skin darkening (Y/N)": skin_darkening.astype(int),
            "Hair loss(Y/N)": hair_loss.astype(int),
            "Pimples(Y/N)": pimples.astype(int),
            "Fast food (Y/N)": fast_food.astype(int),
            "Reg.Exercise(Y/N)": exercise.astype(int),
            "BP _Systolic (mmHg)": np.round(rng.normal(114, 9, n), 0),
            "BP _Diastolic (mmHg)": np.round(rng.normal(75, 7, n), 0),
            "Follicle No. (L)": foll_l,
            "Follicle No. (R)": foll_r,
            "Avg. F size (L) (mm)": np.round(avg_f_l, 1),
            "Avg. F size (R) (mm)": np.round(avg_f_r, 1),
            "Endometrium (mm)": np.round(endometrium, 1),
        }
    )

    # blank out one measurement in a few rows so cleaning has work to do
    if n_missing_rows:
        frame = frame.astype(object)
        victims = rng.choice(n, size=min(n_missing_rows, n), replace=False)
        holes = rng.choice(
            ["TSH (mIU/L)", "AMH(ng/mL)", "Vit D3 (ng/mL)", "Hb(g/dl)"],
            size=len(victims),
        )
        for row, col in zip(victims, holes):
            frame.at[row, col] = ""
    return frame


def write_synthetic_csv(path, seed: int = DEFAULT_SEED, n: int = DEFAULT_ROWS) -> None:
    make_synthetic_pcos(seed=seed, n=n).to_csv(path, index=False)
