#!/usr/bin/env python3
"""Convert a Hugging Face GPT-2 checkpoint into a zeroem base-model directory.

Output: weights.bin (ZEMW0001 tensors), vocab.json, merges.txt, tokenizer.json.

    python tools/convert_hf_gpt2.py --model gpt2 --out models/gpt2
    zeroem train --base gpt2 --base-dir models/gpt2 ...
"""

import argparse
import json
import struct
from pathlib import Path

MAGIC = b"ZEMW0001"


def write_weights(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            array = tensors[name]
            if array.ndim == 1:
                array = array.reshape(1, -1)
            rows, cols = array.shape
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", rows, cols))
            f.write(array.astype("<f4", copy=False).tobytes(order="C"))


def gpt2_tensors(state_dict):
    """GPT-2 state dict -> zeroem tensor names. Conv1D weights are already (in, out)."""
    out = {}
    for key, value in state_dict.items():
        name = key[len("transformer."):] if key.startswith("transformer.") else key
        if name.endswith(".attn.bias") or name.endswith(".attn.masked_bias") or name == "lm_head.weight":
            continue
        out[name] = value.detach().cpu().float().numpy()
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="gpt2", help="hub name or local directory")
    parser.add_argument("--out", required=True, type=Path)
    args = parser.parse_args()

    from transformers import GPT2Model, GPT2Tokenizer

    model = GPT2Model.from_pretrained(args.model)
    tokenizer = GPT2Tokenizer.from_pretrained(args.model)
    args.out.mkdir(parents=True, exist_ok=True)

    tensors = gpt2_tensors(model.state_dict())
    write_weights(args.out / "weights.bin", tensors)
    tokenizer.save_vocabulary(str(args.out))
    (args.out / "tokenizer.json").write_text(json.dumps({"kind": "gpt2-bpe"}, indent=2) + "\n")
    total = sum(t.size for t in tensors.values())
    print(f"wrote {len(tensors)} tensors ({total} parameters) to {args.out}")


if __name__ == "__main__":
    main()
