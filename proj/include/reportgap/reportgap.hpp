#pragma once

#include "reportgap/bootstrap.hpp"
#include "reportgap/calendar.hpp"
#include "reportgap/counterfactual.hpp"
#include "reportgap/csv.hpp"
#include "reportgap/diagnostics.hpp"
#include "reportgap/did.hpp"
#include "reportgap/error.hpp"
#include "reportgap/eventstudy.hpp"
#include "reportgap/festimator.hpp"
#include "reportgap/ingest.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/stats.hpp"
#include "reportgap/synth.hpp"
#include "reportgap/treatments.hpp"
