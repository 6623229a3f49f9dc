#pragma once

#include "gdmd/assignment.hpp"
#include "gdmd/baselines.hpp"
#include "gdmd/common.hpp"
#include "gdmd/dmd.hpp"
#include "gdmd/dnfc.hpp"
#include "gdmd/graph_dmd.hpp"
#include "gdmd/io.hpp"
#include "gdmd/koopman.hpp"
#include "gdmd/modes_post.hpp"
#include "gdmd/regression.hpp"
#include "gdmd/simulate.hpp"
