# 04_single_training_run.py
# ---------------------------------------------------------------------------
# One fold of training, watched closely.
#
# train_fold() is the engine underneath cross-validation: it carves a
# stratified validation split out of the training samples, applies the
# preprocessing arm (here: Sobel on), normalizes to [0, 1], and runs
# shuffled mini-batches through forward/backward/Adam for the configured
# number of epochs. Loss and accuracy are recorded per epoch for both the
# training and validation sides; the held-out test samples are scored once
# at the end.
#
# The run is fully deterministic in its seed, so every number printed here
# is reproducible.
# ---------------------------------------------------------------------------
from pathlib import Path

from sobelcnn.evaluation import confusion, metrics, roc_auc
from sobelcnn.network import NetworkSpec
from sobelcnn.runio import render_curves_svg
from sobelcnn.synthetic import make_dataset
from sobelcnn.training import TrainConfig, train_fold

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# 60 synthetic images: 40 train on one side, 20 held out as the "test fold".
dataset = make_dataset(30, 30, side=24, seed=21)
train_samples = dataset.samples[:20] + dataset.samples[30:50]
test_samples = dataset.samples[20:30] + dataset.samples[50:60]

spec = NetworkSpec(input_side=24, conv_blocks=((4, 3, 2), (8, 3, 2)),
                   dense_widths=(16, 8), dropout_rate=0.2, head="sigmoid")
config = TrainConfig(epochs=30, batch_size=8, head="sigmoid", sobel=True,
                     seed=5)

result = train_fold(spec, config, train_samples, test_samples, seed=5)

print("epoch  train_loss  train_acc  val_loss  val_acc")
for epoch, (tl, ta, vl, va) in enumerate(result.history.rows(), start=1):
    if epoch % 5 == 0 or epoch == 1:
        print(f"{epoch:5d}  {tl:10.4f}  {ta:9.3f}  {vl:8.4f}  {va:7.3f}")

cm = confusion(result.predictions, result.test_labels)
report = metrics(cm)
report.auc = roc_auc(result.scores, result.test_labels)
print(f"\nheld-out confusion: tp={cm.tp} tn={cm.tn} fp={cm.fp} fn={cm.fn}")
print(f"held-out accuracy={report.accuracy:.3f} "
      f"sensitivity={report.sensitivity:.3f} "
      f"specificity={report.specificity:.3f} auc={report.auc:.3f}")

# The same renderer the CLI uses for its curve charts.
svg = render_curves_svg([result.history.val_loss],
                        "Validation loss, single fold", "loss")
(OUT / "single_fold_loss.svg").write_text(svg)
print(f"\nwrote {OUT / 'single_fold_loss.svg'}")
