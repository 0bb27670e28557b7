import json
import string

import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def tiny_clip_dir(tmp_path_factory):
    """A complete, offline-constructible CLIP checkpoint directory.

    Random weights, a character-level BPE vocabulary, and a 32px image
    processor: enough to exercise the real from_pretrained -> processor ->
    encode path without network access. Semantic quality is obviously
    meaningless; tests needing real weights are gated separately.
    """
    from transformers import CLIPConfig, CLIPImageProcessor, CLIPModel, CLIPTokenizer

    root = tmp_path_factory.mktemp("tiny_clip")

    chars = list(string.ascii_lowercase + string.digits + string.punctuation)
    vocab_tokens = chars + [c + "</w>" for c in chars]
    vocab_tokens += ["<|startoftext|>", "<|endoftext|>"]
    vocab = {tok: i for i, tok in enumerate(vocab_tokens)}
    (root / "vocab.json").write_text(json.dumps(vocab))
    (root / "merges.txt").write_text("#version: 0.2\n")

    tokenizer = CLIPTokenizer(
        vocab_file=str(root / "vocab.json"),
        merges_file=str(root / "merges.txt"),
        model_max_length=77,
    )
    tokenizer.save_pretrained(root)

    CLIPImageProcessor(
        size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32}
    ).save_pretrained(root)

    config = CLIPConfig(
        text_config={
            "vocab_size": len(vocab),
            "hidden_size": 32,
            "intermediate_size": 64,
            "num_hidden_layers": 2,
            "num_attention_heads": 2,
            "max_position_embeddings": 77,
            "bos_token_id": vocab["<|startoftext|>"],
            "eos_token_id": vocab["<|endoftext|>"],
        },
        vision_config={
            "hidden_size": 32,
            "intermediate_size": 64,
            "num_hidden_layers": 2,
            "num_attention_heads": 2,
            "image_size": 32,
            "patch_size": 8,
        },
        projection_dim=24,
    )
    import torch

    torch.manual_seed(1234)
    CLIPModel(config).save_pretrained(root)
    return str(root)


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Ten deterministic synthetic photos (bright, dark, and gradients)."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(7)
    Image.new("RGB", (64, 48), (245, 240, 235)).save(root / "bright.png")
    Image.new("RGB", (64, 48), (12, 10, 14)).save(root / "dark.png")
    for i in range(8):
        pixels = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(root / f"noise{i}.png")
    return str(root)


@pytest.fixture()
def schema_file(tmp_path):
    """The pipeline's built-in 24-query schema document, written locally."""
    from visrisk.schema import builtin_schema_json

    path = tmp_path / "schema.json"
    path.write_text(builtin_schema_json())
    return str(path)


def real_clip_available(model_id="openai/clip-vit-base-patch32"):
    """True when the pretrained checkpoint is loadable (cache or network)."""
    try:
        from transformers import CLIPModel

        CLIPModel.from_pretrained(model_id)
        return True
    except Exception:
        return False
