#pragma once

#include "disp/config.hpp"
#include "disp/eval.hpp"

namespace disp::test {

// Small enough to train all three models in a few seconds.
inline SyntheticTaskSpec small_task_spec() {
  SyntheticTaskSpec s;
  s.id = "unit";
  s.vocab_size = 400;
  s.class_tokens = 20;
  s.cue_tokens = 10;
  s.train_docs = 1500;
  s.test_docs = 80;
  s.dim = 16;
  return s;
}

inline PipelineConfig small_pipeline_config() {
  PipelineConfig p = default_run_config().pipeline;
  for (EncoderConfig* e : {&p.classifier_encoder, &p.discriminator_encoder, &p.estimator_encoder}) {
    e->d = 16;
    e->num_heads = 2;
  }
  p.classifier_training.epochs = 4;
  p.discriminator_training.epochs = 3;
  p.estimator_training.epochs = 3;
  p.estimator_training.max_examples_per_epoch = 8000;
  return p;
}

struct SmallPipeline {
  SyntheticTask task;
  ModelBundle models;
};

// Trained once per test binary.
inline const SmallPipeline& small_pipeline() {
  static const SmallPipeline p = [] {
    SmallPipeline out;
    out.task = generate_synthetic_task(small_task_spec());
    out.models = train_models(out.task.train, out.task.train, out.task.corpus, small_pipeline_config(), 1);
    return out;
  }();
  return p;
}

}  // namespace disp::test
