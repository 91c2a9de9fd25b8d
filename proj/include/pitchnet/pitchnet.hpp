#ifndef PITCHNET_PITCHNET_HPP
#define PITCHNET_PITCHNET_HPP

#include "pitchnet/checkpoint.hpp"
#include "pitchnet/dataset.hpp"
#include "pitchnet/experiments.hpp"
#include "pitchnet/generate.hpp"
#include "pitchnet/gradient_check.hpp"
#include "pitchnet/midi.hpp"
#include "pitchnet/network.hpp"
#include "pitchnet/optim.hpp"
#include "pitchnet/score.hpp"
#include "pitchnet/train.hpp"

#endif  // PITCHNET_PITCHNET_HPP
