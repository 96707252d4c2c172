#pragma once

#include <softcal/calibrators.hpp>
#include <softcal/data.hpp>
#include <softcal/error.hpp>
#include <softcal/harness.hpp>
#include <softcal/instrument.hpp>
#include <softcal/numerics.hpp>
#include <softcal/optim.hpp>
#include <softcal/problems.hpp>
#include <softcal/serialization.hpp>
