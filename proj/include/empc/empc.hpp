#pragma once

// Everything except file I/O (empc/io.hpp, which needs nlohmann/json).

#include "empc/qp.hpp"
#include "empc/dynamics.hpp"
#include "empc/model.hpp"
#include "empc/steady_state.hpp"
#include "empc/controller.hpp"
#include "empc/certification.hpp"
#include "empc/wdn.hpp"
#include "empc/pipeline.hpp"
