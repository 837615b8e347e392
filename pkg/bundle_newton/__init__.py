# Bundle Newton package initialization
