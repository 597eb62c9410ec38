"""Training-curve rendering from epoch-log rows."""

from treectx.plots import figure_path_for, render_training_curves
from treectx.training import EpochLog, compute_metrics, read_epoch_csv, write_epoch_csv


def make_logs(classes, epochs=4):
    logs = []
    for epoch in range(epochs):
        report = compute_metrics([0, 1, 1], [0, 1, 0], classes, loss=1.0 / (epoch + 1))
        logs.append(EpochLog(epoch, 2.0 / (epoch + 1), report.loss, report))
    return logs


def test_renders_png_next_to_csv(tmp_path):
    classes = ("name", "price")
    csv_path = tmp_path / "run.csv"
    write_epoch_csv(make_logs(classes), classes, csv_path)
    got_classes, rows = read_epoch_csv(csv_path)
    out = render_training_curves(got_classes, rows, figure_path_for(csv_path))
    assert out == tmp_path / "run.png"
    assert out.stat().st_size > 1000


def test_handles_many_classes(tmp_path):
    classes = ("negative", "name", "cart", "price", "addtocart", "mainpicture", "subjectnode")
    logs = []
    for epoch in range(3):
        report = compute_metrics(list(range(7)), list(range(7)), classes, loss=0.5)
        logs.append(EpochLog(epoch, 0.9, report.loss, report))
    csv_path = tmp_path / "seven.csv"
    write_epoch_csv(logs, classes, csv_path)
    got_classes, rows = read_epoch_csv(csv_path)
    out = render_training_curves(got_classes, rows, tmp_path / "seven.png")
    assert out.exists()
