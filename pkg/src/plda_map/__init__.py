"""Two-covariance PLDA with MAP-shrunk between-class variances."""
