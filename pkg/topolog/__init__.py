# topolog - topological and spectral features for host-log anomaly detection
