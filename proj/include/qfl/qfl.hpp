#pragma once

// Umbrella header: the whole library in one include.
//
//   statevec  — amplitude-vector circuit simulator with depolarizing noise
//   model     — variational quantum classifier and parameter-shift gradients
//   dp        — (epsilon, delta) accounting for noise-injected training
//   data      — image/CSV ingestion and the synthetic blob generator
//   fed       — federated averaging orchestration and checkpoints
//   attack    — black-box FGSM robustness evaluation
//   config    — run configuration: sectioned text files plus overrides
//   runner    — the train / dp-sweep / attack / report commands

#include "qfl/attack.hpp"
#include "qfl/config.hpp"
#include "qfl/data.hpp"
#include "qfl/dp.hpp"
#include "qfl/errors.hpp"
#include "qfl/fed.hpp"
#include "qfl/format.hpp"
#include "qfl/model.hpp"
#include "qfl/parallel.hpp"
#include "qfl/rng.hpp"
#include "qfl/runner.hpp"
#include "qfl/statevec.hpp"
