# Adaptive Kuramoto / graphon simulation package
