#pragma once

#include "cure/augment.hpp"
#include "cure/clahe.hpp"
#include "cure/core.hpp"
#include "cure/curriculum.hpp"
#include "cure/evalkit.hpp"
#include "cure/geometry.hpp"
#include "cure/ingest.hpp"
#include "cure/io.hpp"
#include "cure/judge.hpp"
#include "cure/parse.hpp"
#include "cure/taskgen.hpp"
