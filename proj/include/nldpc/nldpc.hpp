#pragma once

#include "nldpc/checkpoint.hpp"
#include "nldpc/config.hpp"
#include "nldpc/dynamics.hpp"
#include "nldpc/export.hpp"
#include "nldpc/matrix.hpp"
#include "nldpc/nets.hpp"
#include "nldpc/objective.hpp"
#include "nldpc/rollout.hpp"
#include "nldpc/tape.hpp"
#include "nldpc/trainer.hpp"
#include "nldpc/verifier.hpp"
