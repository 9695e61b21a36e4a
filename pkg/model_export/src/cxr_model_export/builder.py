"""Feature-extractor construction from a weights identifier.

The production export pulls the multi-dataset chest X-ray DenseNet-121
through torchxrayvision. ``random`` / ``random:<seed>`` builds the same
topology with deterministic random weights and a single-channel stem, so
the export and verification machinery can run where the pretrained
download is unavailable (CI, air-gapped builds).
"""

from __future__ import annotations

import torch
from torchvision.models import densenet121

XRV_WEIGHT_NAMES = {
    "all": "densenet121-res224-all",
}


class WeightLoadError(RuntimeError):
    """The requested weights could not be resolved into a model."""


def _pretrained_backbone(name: str) -> torch.nn.Module:
    resolved = XRV_WEIGHT_NAMES.get(name, name)
    try:
        import torchxrayvision as xrv
    except ImportError as e:
        raise WeightLoadError(
            "pretrained X-ray weights need the torchxrayvision package; "
            "install the 'pretrained' extra or export with --weights random:<seed>"
        ) from e
    try:
        return xrv.models.DenseNet(weights=resolved)
    except Exception as e:
        raise WeightLoadError(f"could not load weights {resolved!r}: {e}") from e


def _random_backbone(seed: int) -> torch.nn.Module:
    torch.manual_seed(seed)
    model = densenet121(weights=None)
    # X-ray input is one channel; rebuild the stem conv accordingly. The
    # replacement draws from the same seeded RNG, so builds are repeatable.
    model.features.conv0 = torch.nn.Conv2d(
        1, 64, kernel_size=7, stride=2, padding=3, bias=False)
    return model


def build_feature_extractor(weights_identifier: str) -> torch.nn.Module:
    """Resolve a weights identifier to an eval-mode DenseNet-121 backbone.

    ``all`` (or a full torchxrayvision weights name) loads the pretrained
    X-ray model; ``random`` or ``random:<seed>`` gives the seeded
    random-weight build.
    """
    if weights_identifier == "random" or weights_identifier.startswith("random:"):
        _, _, raw = weights_identifier.partition(":")
        try:
            seed = int(raw) if raw else 0
        except ValueError:
            raise WeightLoadError(
                f"bad seed in weights identifier {weights_identifier!r}") from None
        model = _random_backbone(seed)
    elif weights_identifier in XRV_WEIGHT_NAMES or weights_identifier.startswith("densenet121-"):
        model = _pretrained_backbone(weights_identifier)
    else:
        raise WeightLoadError(
            f"unknown weights identifier {weights_identifier!r}; expected 'all', "
            "a densenet121-* weights name, or random[:seed]")
    return model.eval()
