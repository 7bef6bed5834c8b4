#ifndef SAN_SAN_HPP
#define SAN_SAN_HPP

#include "san/error.hpp"
#include "san/tensor.hpp"
#include "san/ops.hpp"
#include "san/gradcheck.hpp"
#include "san/params.hpp"
#include "san/vocab.hpp"
#include "san/config.hpp"
#include "san/question_model.hpp"
#include "san/image_model.hpp"
#include "san/dropout.hpp"
#include "san/attention.hpp"
#include "san/checkpoint.hpp"
#include "san/dataset.hpp"
#include "san/training.hpp"
#include "san/metrics.hpp"
#include "san/viz.hpp"

#endif  // SAN_SAN_HPP
