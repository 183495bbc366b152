#pragma once

#include "kryloscope/analytic.hpp"
#include "kryloscope/chain.hpp"
#include "kryloscope/counting.hpp"
#include "kryloscope/error.hpp"
#include "kryloscope/fluctuations.hpp"
#include "kryloscope/io.hpp"
#include "kryloscope/liouvillian.hpp"
#include "kryloscope/ode.hpp"
#include "kryloscope/overlaps.hpp"
#include "kryloscope/profile.hpp"
#include "kryloscope/semiclassics.hpp"
