# pytest suites for the ris-zf-sim package
