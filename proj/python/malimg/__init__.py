"""Executable-to-image encoders, classifiers and metrics."""

import json

from ._malimg import (
    EmptyFileError,
    FormatError,
    MalimgError,
    Model,
    UndefinedAucError,
    UsageError,
    __version__,
    bin_width,
    encode_3gram,
    encode_colormap,
    encode_grayscale,
    encode_pe,
    extract_image,
    forest_fit,
    knn_fit,
    load_model,
    mlp_fit,
    parse_pe,
    plasma,
    read_manifest,
    read_png,
    read_predictions,
    resize,
    roc_auc,
    run_cli,
    sha256_file,
    shannon_entropy,
    truncate_pad,
    write_manifest,
    write_png,
    write_predictions,
)


def classification_report(truth, pred, classes):
    """Per-class, macro, weighted and micro scores plus the confusion matrix."""
    return json.loads(_classification_report_json(list(truth), list(pred), list(classes)))


from ._malimg import classification_report_json as _classification_report_json  # noqa: E402


def main(argv=None):
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
