"""Transducer lattice math, a toy decoder-only transformer and monotonic decoding."""

from motr._core import (  # noqa: F401
    AdamState,
    DecodeOptions,
    ModelConfig,
    ModelParams,
    SequencePair,
    TaskSpec,
    TrainOptions,
    backward_variables,
    build_lattice,
    decode,
    decode_with_pseudo_prompt,
    example_loss,
    forced_align,
    forward_variables,
    generate,
    init_adam,
    init_params,
    load_checkpoint,
    load_corpus,
    loss_and_grad,
    make_long_concat,
    posterior_map,
    save_checkpoint,
    save_corpus,
    token_error_rate,
    total_log_prob,
    train_loop,
    train_step,
)
