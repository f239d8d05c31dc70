#pragma once

#include "kwflow/config.hpp"
#include "kwflow/errors.hpp"
#include "kwflow/flow.hpp"
#include "kwflow/functionals.hpp"
#include "kwflow/generators.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/mesh_io.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"
#include "kwflow/runner.hpp"
#include "kwflow/uniformize.hpp"
