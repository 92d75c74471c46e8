#!/usr/bin/env python3
"""Reference model server for the biasprobe HTTP backend.

Wraps a pretrained masked language model behind the five-route JSON
protocol the Rust client speaks:

    GET  /descriptor      -> {name, mask_token, vocabulary_size, embedding_dimension}
    POST /encode          {text} -> {tokens: [{token, start, end}]}
    POST /contains        {token} -> {contains}
    POST /predict_mask    {tokens, mask_positions} -> {distributions: {pos: {token: p}}}
    POST /embeddings      {tokens} -> {vectors: [[float]]}

Usage:

    pip install torch transformers
    python3 python/serve_mlm.py --model bert-base-uncased --port 8756

then point the CLI or the acceptance suite at it:

    biasprobe probe --backend http://127.0.0.1:8756 --category ... --out runs/
    BIASPROBE_MLM_URL=http://127.0.0.1:8756 cargo test --test acceptance

Offsets in /encode are character offsets into the submitted text.
/predict_mask returns the full softmax per requested slot so the client
can look up any candidate token; pair it with the client-side cache.
"""

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def build_state(model_name: str, device: str):
    import torch
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_name, use_fast=True)
    model = AutoModelForMaskedLM.from_pretrained(model_name, output_hidden_states=True)
    model.to(device)
    model.eval()
    vocab = tokenizer.get_vocab()
    id_to_token = [None] * len(vocab)
    for token, idx in vocab.items():
        if idx < len(id_to_token):
            id_to_token[idx] = token
    return {
        "torch": torch,
        "tokenizer": tokenizer,
        "model": model,
        "device": device,
        "vocab": vocab,
        "id_to_token": id_to_token,
        "name": model_name,
        "lock": threading.Lock(),
    }


def run_model(state, tokens):
    """Model forward over [CLS] tokens [SEP]; returns (logits, hidden)."""
    torch = state["torch"]
    tokenizer = state["tokenizer"]
    ids = tokenizer.convert_tokens_to_ids(tokens)
    input_ids = [tokenizer.cls_token_id] + ids + [tokenizer.sep_token_id]
    batch = torch.tensor([input_ids], device=state["device"])
    with state["lock"], torch.no_grad():
        out = state["model"](batch)
    return out.logits[0], out.hidden_states[-1][0]


class Handler(BaseHTTPRequestHandler):
    state = None  # injected before serving

    def log_message(self, fmt, *args):  # quieter default logging
        pass

    def reply(self, payload, status=200):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def read_json(self):
        length = int(self.headers.get("content-length", 0))
        return json.loads(self.rfile.read(length) or b"{}")

    def do_GET(self):
        state = self.state
        if self.path.rstrip("/") == "/descriptor" or self.path == "/descriptor":
            self.reply(
                {
                    "name": state["name"],
                    "mask_token": state["tokenizer"].mask_token,
                    "vocabulary_size": len(state["vocab"]),
                    "embedding_dimension": state["model"].config.hidden_size,
                }
            )
        else:
            self.reply({"error": f"unknown route {self.path}"}, status=404)

    def do_POST(self):
        state = self.state
        tokenizer = state["tokenizer"]
        try:
            payload = self.read_json()
            if self.path == "/encode":
                enc = tokenizer(
                    payload["text"],
                    add_special_tokens=False,
                    return_offsets_mapping=True,
                )
                tokens = tokenizer.convert_ids_to_tokens(enc["input_ids"])
                self.reply(
                    {
                        "tokens": [
                            {"token": tok, "start": start, "end": end}
                            for tok, (start, end) in zip(tokens, enc["offset_mapping"])
                        ]
                    }
                )
            elif self.path == "/contains":
                self.reply({"contains": payload["token"] in state["vocab"]})
            elif self.path == "/predict_mask":
                torch = state["torch"]
                tokens = payload["tokens"]
                positions = payload["mask_positions"]
                logits, _ = run_model(state, tokens)
                distributions = {}
                for pos in positions:
                    probs = torch.softmax(logits[pos + 1], dim=-1).tolist()
                    distributions[str(pos)] = {
                        token: p
                        for token, p in zip(state["id_to_token"], probs)
                        if token is not None
                    }
                self.reply({"distributions": distributions})
            elif self.path == "/embeddings":
                tokens = payload["tokens"]
                _, hidden = run_model(state, tokens)
                vectors = hidden[1 : len(tokens) + 1].tolist()
                self.reply({"vectors": vectors})
            else:
                self.reply({"error": f"unknown route {self.path}"}, status=404)
        except Exception as e:  # report, keep serving
            self.reply({"error": str(e)}, status=500)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="bert-base-uncased")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8756)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()

    Handler.state = build_state(args.model, args.device)
    server = ThreadingHTTPServer((args.host, args.port), Handler)
    print(f"serving {args.model} on http://{args.host}:{args.port}")
    server.serve_forever()


if __name__ == "__main__":
    main()
