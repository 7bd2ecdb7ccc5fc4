"""CLI package for memt5.

Usage:
    memt5 train-tokenizer --corpus wiki.train.txt --vocab-size 32000 --out vocab.txt
    memt5 pretrain --preset t5mem_af_linear --set train_path=wiki.train.txt
    memt5 pretrain --config run.json --resume runs/run/last.ckpt
    memt5 finetune --preset t5mem_hp_4_chunks_af_const --init runs/t5mem_af_linear/best.ckpt
    memt5 eval --config run.json --ckpt runs/run/best.ckpt --split test
    memt5 generate --ckpt runs/run/best.ckpt --input "question? context" --max-len 40
    memt5 dump-attention --preset t5mem_af_linear --out runs/mask
    memt5 gradcheck --full
    memt5 verify
    memt5 summarize runs/a/metrics.csv runs/b/metrics.csv
"""

from memt5.cli.main import app, main

__all__ = ["app", "main"]
