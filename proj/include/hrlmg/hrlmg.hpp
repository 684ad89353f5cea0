#pragma once

#include "hrlmg/catalog.hpp"
#include "hrlmg/checkpoint.hpp"
#include "hrlmg/config.hpp"
#include "hrlmg/encoders.hpp"
#include "hrlmg/environment.hpp"
#include "hrlmg/errors.hpp"
#include "hrlmg/eval.hpp"
#include "hrlmg/heads.hpp"
#include "hrlmg/high_agent.hpp"
#include "hrlmg/io.hpp"
#include "hrlmg/low_agent.hpp"
#include "hrlmg/numerics.hpp"
#include "hrlmg/replay.hpp"
#include "hrlmg/rng.hpp"
#include "hrlmg/trainer.hpp"
