#pragma once

// Everything at once.

#include "dive/bench.hpp"
#include "dive/cli.hpp"
#include "dive/config.hpp"
#include "dive/curation.hpp"
#include "dive/diffusion.hpp"
#include "dive/dynamics.hpp"
#include "dive/flow.hpp"
#include "dive/frame_io.hpp"
#include "dive/global_motion.hpp"
#include "dive/human_study.hpp"
#include "dive/mca.hpp"
#include "dive/mca_checks.hpp"
#include "dive/prompt_degree.hpp"
#include "dive/quality.hpp"
#include "dive/study_server.hpp"
#include "dive/synth.hpp"
