"""Pretrained-classifier logits over real datasets, written in the semap format.

Rows follow dataset order; logits are pre-softmax; downstream labels ride
along so the files drive frequency mapping and zero-shot evaluation directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .formats import ExporterError, write_labels, write_logit_file

# class-name lists for the supported downstream datasets (fixed, public)
DATASET_LABELS: dict[str, list[str]] = {
    "stl10": [
        "airplane", "bird", "car", "cat", "deer",
        "dog", "horse", "monkey", "ship", "truck",
    ],
    "cifar10": [
        "airplane", "automobile", "bird", "cat", "deer",
        "dog", "frog", "horse", "ship", "truck",
    ],
    "fmnist": [
        "t-shirt", "trouser", "pullover", "dress", "coat",
        "sandal", "shirt", "sneaker", "bag", "ankle boot",
    ],
}

MODEL_BUILDERS = ("resnet18", "resnet50", "resnext101_32x8d", "wide_resnet50_2")


def dataset_label_names(dataset: str) -> list[str]:
    """Class names for a downstream dataset, or torchvision's ImageNet list."""
    if dataset in DATASET_LABELS:
        return list(DATASET_LABELS[dataset])
    if dataset == "cifar100":
        # torchvision exposes the canonical fine-label order on the dataset
        # object only after download; keep the bundled constant instead
        return list(_CIFAR100_FINE_LABELS)
    if dataset == "imagenet":
        from torchvision.models import ResNet50_Weights

        return list(ResNet50_Weights.IMAGENET1K_V1.meta["categories"])
    raise ExporterError(f"unknown dataset {dataset!r}")


def export_dataset_labels(dataset: str, out_path: str | Path) -> int:
    names = dataset_label_names(dataset)
    write_labels(out_path, names)
    return len(names)


def _build_model(model_name: str):
    import torchvision.models as tvm

    if model_name not in MODEL_BUILDERS:
        raise ExporterError(
            f"unknown model {model_name!r}; choose from {', '.join(MODEL_BUILDERS)}"
        )
    try:
        builder = getattr(tvm, model_name)
        weights = tvm.get_model_weights(model_name).IMAGENET1K_V1
        model = builder(weights=weights)
    except Exception as exc:
        raise ExporterError(f"could not load model {model_name!r}: {exc}") from exc
    model.eval()
    return model, weights.transforms()


def _build_dataset(dataset: str, split: str, data_root: str | Path, transform):
    import torchvision.datasets as tvd
    import torchvision.transforms as T

    grayscale_fix = T.Compose([T.Lambda(lambda img: img.convert("RGB")), transform])
    try:
        if dataset == "stl10":
            return tvd.STL10(str(data_root), split=split, transform=transform, download=True)
        if dataset == "cifar10":
            return tvd.CIFAR10(str(data_root), train=split == "train",
                               transform=transform, download=True)
        if dataset == "cifar100":
            return tvd.CIFAR100(str(data_root), train=split == "train",
                                transform=transform, download=True)
        if dataset == "fmnist":
            return tvd.FashionMNIST(str(data_root), train=split == "train",
                                    transform=grayscale_fix, download=True)
    except Exception as exc:
        raise ExporterError(f"could not load dataset {dataset!r}: {exc}") from exc
    raise ExporterError(f"unknown dataset {dataset!r}")


def export_logits(
    dataset: str,
    model_name: str,
    split: str,
    out_path: str | Path,
    data_root: str | Path = "data",
    batch_size: int = 64,
    limit: int | None = None,
    model_and_data: tuple | None = None,
) -> tuple[int, int]:
    """Run the model over the split and write an N x n labeled logit file.

    ``model_and_data`` injects a ready (model, dataset) pair, bypassing the
    torchvision loaders (used by tests and custom pipelines). Returns (N, n).
    """
    import torch
    from torch.utils.data import DataLoader

    if model_and_data is not None:
        model, data = model_and_data
    else:
        model, transform = _build_model(model_name)
        data = _build_dataset(dataset, split, data_root, transform)

    loader = DataLoader(data, batch_size=batch_size, shuffle=False)
    score_chunks = []
    label_chunks = []
    remaining = limit
    with torch.no_grad():
        for images, targets in loader:
            if remaining is not None:
                images, targets = images[:remaining], targets[:remaining]
            out = model(images)
            score_chunks.append(out.cpu().numpy())
            label_chunks.append(np.asarray(targets, dtype=np.int64))
            if remaining is not None:
                remaining -= len(images)
                if remaining <= 0:
                    break
    if not score_chunks:
        raise ExporterError("dataset produced no examples")
    scores = np.concatenate(score_chunks, axis=0)
    labels = np.concatenate(label_chunks, axis=0)
    if labels.min() < 0:
        raise ExporterError("dataset produced negative labels")
    write_logit_file(out_path, scores.astype(np.float32), labels.astype(np.uint32))
    return scores.shape[0], scores.shape[1]


# CIFAR100 fine labels in index order (the dataset's canonical ordering)
_CIFAR100_FINE_LABELS = [
    "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle",
    "bicycle", "bottle", "bowl", "boy", "bridge", "bus", "butterfly", "camel",
    "can", "castle", "caterpillar", "cattle", "chair", "chimpanzee", "clock",
    "cloud", "cockroach", "couch", "crab", "crocodile", "cup", "dinosaur",
    "dolphin", "elephant", "flatfish", "forest", "fox", "girl", "hamster",
    "house", "kangaroo", "keyboard", "lamp", "lawn_mower", "leopard", "lion",
    "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain", "mouse",
    "mushroom", "oak_tree", "orange", "orchid", "otter", "palm_tree", "pear",
    "pickup_truck", "pine_tree", "plain", "plate", "poppy", "porcupine",
    "possum", "rabbit", "raccoon", "ray", "road", "rocket", "rose", "sea",
    "seal", "shark", "shrew", "skunk", "skyscraper", "snail", "snake", "spider",
    "squirrel", "streetcar", "sunflower", "sweet_pepper", "table", "tank",
    "telephone", "television", "tiger", "tractor", "train", "trout", "tulip",
    "turtle", "wardrobe", "whale", "willow_tree", "wolf", "woman", "worm",
]
