# api package

