"""Expected power of the two linearisations of a filtered constraint.

Filtering the linearised constraint (A) keeps more power than linearising the
filtered images (B), and the gap widens with scale.  The ratio is printed for
four image spectra.
"""

from gcmdisp.evaluation import SPECTRUM_MODELS, spectrum_ratio

SIGMAS = (1.0, 2.0, 4.0, 8.0)

print("model   " + "".join(f"sigma={s:<8g}" for s in SIGMAS))
for model in SPECTRUM_MODELS:
    print(f"{model:8s}" + "".join(f"{spectrum_ratio(s, model, n=512):<14.4g}" for s in SIGMAS))
