#pragma once

#include "imseg/core/errors.hpp"
#include "imseg/core/gradcheck.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/core/rng.hpp"
#include "imseg/core/tensor.hpp"
#include "imseg/data/dataset.hpp"
#include "imseg/data/generator.hpp"
#include "imseg/data/metrics.hpp"
#include "imseg/data/pnm.hpp"
#include "imseg/decoder/implicit_decoder.hpp"
#include "imseg/decoder/positional.hpp"
#include "imseg/decoder/sampling.hpp"
#include "imseg/encoder/image_encoder.hpp"
#include "imseg/encoder/prompt_encoder.hpp"
#include "imseg/encoder/spectrum.hpp"
#include "imseg/io/checkpoint.hpp"
#include "imseg/model.hpp"
#include "imseg/training/adamw.hpp"
#include "imseg/training/loss.hpp"
#include "imseg/training/trainer.hpp"
