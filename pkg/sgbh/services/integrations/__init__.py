# Provider abstractions for noise coefficients and initial conditions
