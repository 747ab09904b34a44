"""Records the reference fixtures used by the Rust tests.

Runs once with Python `transformers`; the outputs are committed under
crates/straighten/tests/fixtures and never regenerated by the test suite.
"""
import json
import re
import pathlib

import torch
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

ROOT = pathlib.Path(__file__).resolve().parent.parent
ASSETS = ROOT / "crates/straighten/assets/gpt2"
OUT = ROOT / "crates/straighten/tests/fixtures"

PARAGRAPH = (
    "The quick brown fox doesn't jump over 13 lazy dogs; it's   tired.\n"
    "Straightening happens when trajectories become  less curved, isn't it?  "
    "Café naïve coöperate — 3.14159 and 2,718 emojis 🙂!"
)


def tokenizer_golden():
    tok = GPT2Tokenizer(str(ASSETS / "vocab.json"), str(ASSETS / "merges.txt"))
    cases = ["Hello world", "straightening", PARAGRAPH, " leading and trailing  ", ""]
    out = [{"text": t, "ids": tok.encode(t)} for t in cases]
    (OUT / "tokenizer_golden.json").write_text(json.dumps({"vocab_size": len(tok), "cases": out}, ensure_ascii=False, indent=1))


def forward_golden():
    torch.manual_seed(20240917)
    cfg = GPT2Config(vocab_size=512, n_positions=128, n_embd=48, n_layer=3, n_head=4,
                     activation_function="gelu_new", layer_norm_epsilon=1e-5)
    model = GPT2LMHeadModel(cfg).eval()
    # Perturb every parameter so biases and norm gains all matter.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("ln_1.weight") or name.endswith("ln_2.weight") or name.endswith("ln_f.weight"):
                p.copy_(1.0 + 0.1 * torch.randn_like(p))
            else:
                p.copy_(0.08 * torch.randn_like(p))
    model.save_pretrained(OUT / "tiny_gpt2", safe_serialization=True)
    prompt = [464, 2068, 7586, 21831, 11, 318, 257, 1332]
    prompt = [i % cfg.vocab_size for i in prompt]
    with torch.no_grad():
        res = model(torch.tensor([prompt]), output_hidden_states=True)
    hidden = [h[0].tolist() for h in res.hidden_states]
    golden = {
        "prompt": prompt,
        "logits": res.logits[0].tolist(),
        # Embedding sum and residual stream after blocks 1..n-1; the last entry is the final-norm output.
        "hidden_states": hidden,
    }
    (OUT / "tiny_gpt2_forward.json").write_text(json.dumps(golden))


def byte_vocab():
    """Byte-level vocabulary padded with merges learned on the sample corpus,
    so it covers exactly the tiny model's 512 ids."""
    from collections import Counter
    from transformers.convert_slow_tokenizer import bytes_to_unicode

    encoder = bytes_to_unicode()
    symbols = [encoder[b] for b in range(256)]
    text = (ROOT / "crates/straighten/assets/corpus/sample.txt").read_text()
    words = Counter()
    for w in re.findall(r" ?[A-Za-z]+| ?[0-9]+| ?[^\sA-Za-z0-9]+|\s+", text):
        words[tuple(encoder[b] for b in w.encode())] += 1
    merges = []
    while len(symbols) < 512:
        pairs = Counter()
        for w, n in words.items():
            for a, b in zip(w, w[1:]):
                pairs[(a, b)] += n
        (a, b), _ = max(pairs.items(), key=lambda kv: (kv[1], kv[0]))
        merges.append(f"{a} {b}")
        symbols.append(a + b)
        merged = Counter()
        for w, n in words.items():
            out, i = [], 0
            while i < len(w):
                if i + 1 < len(w) and w[i] == a and w[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            merged[tuple(out)] += n
        words = merged
    d = OUT / "byte_vocab"
    d.mkdir(exist_ok=True)
    (d / "vocab.json").write_text(json.dumps({s: i for i, s in enumerate(symbols)}, ensure_ascii=False))
    (d / "merges.txt").write_text("#version: 0.2\n" + "\n".join(merges) + "\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    tokenizer_golden()
    forward_golden()
    byte_vocab()
