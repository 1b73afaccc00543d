#include <doctest.h>

#include "refdepth/synth.hpp"
